//! Invariant suites over every module at desk scale. One verdict line per
//! suite; any failure makes the command exit with the invariant-failure
//! code.

use anyhow::{bail, Result};

use krl_core::filter::{block_apply, block_decompose, build_filter_bank};
use krl_core::gaussian::{self, SpectralMeasureSpec};
use krl_core::holder::{bernstein_ratio, holder_norm, HolderSpec};
use krl_core::kernel::{
    kernel_density, semigroup_apply, DuhamelPass, KineticPropagator, Quadrature, SpaceTimeField,
    TimeGrid,
};
use krl_core::lattice::{anorm, weight_rho, AnisotropicLattice, LatticeField};
use krl_core::para;
use krl_core::rng::NormalSource;
use krl_core::sde::{self, AnalyticDrift, DriftSource, Functional, SdeConfig};
use krl_core::solver::{self, Drift, PdeProblem, PicardOptions};
use krl_core::stats;

pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn desk() -> (AnisotropicLattice, krl_core::DyadicFilterBank) {
    let lat = AnisotropicLattice::new(1, 64, 64, 4.0, 4.0).unwrap();
    let bank = build_filter_bank(&lat).unwrap();
    (lat, bank)
}

fn random_field(lat: AnisotropicLattice, bank: &krl_core::DyadicFilterBank, seed: u64) -> LatticeField {
    let mut src = NormalSource::substream(seed, 0);
    let noise =
        LatticeField::new(lat, 1, (0..lat.node_count()).map(|_| src.next_normal()).collect())
            .unwrap();
    // band-limit away from the closed top block
    let mut f = LatticeField::zeros(lat, 1);
    for j in 0..bank.top {
        f.add_assign(&block_apply(&noise, j, bank).unwrap(), 1.0);
    }
    f
}

pub fn suite_lattice(corrupt: bool) -> Result<String> {
    let (lat, mut bank) = desk();
    if corrupt {
        // fault-injection hook: perturb one symbol so the partition breaks
        bank.symbols[1][5] += 1e-3;
    }
    let n = lat.node_count();
    for i in 0..n {
        let s: f64 = (0..bank.blocks()).map(|j| bank.symbols[j][i]).sum();
        if (s - 1.0).abs() > 1e-12 {
            bail!("partition of unity violated at node {i}: {s}");
        }
    }
    // reconstruction + block supports
    let f = random_field(lat, &bank, 100);
    let blocks = block_decompose(&f, &bank)?;
    let mut sum = vec![0.0f64; n];
    for b in &blocks {
        for (s, v) in sum.iter_mut().zip(b.iter()) {
            *s += v;
        }
    }
    let recon = sum
        .iter()
        .zip(f.values.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if recon > 1e-10 {
        bail!("reconstruction residual {recon:.3e}");
    }
    // weight equivalence on a coordinate sweep
    for kappa in [1.0f64, 2.0] {
        let c = 4.0f64.powf(kappa / 2.0);
        for i in -4..=4 {
            for j in -4..=4 {
                let z = [3.0 * i as f64, 3.0 * j as f64];
                let ratio = weight_rho(kappa, &z) * (1.0 + anorm(&z)).powf(kappa);
                if !(ratio <= c && ratio >= 1.0 / c) {
                    bail!("weight equivalence broken at {z:?}: {ratio}");
                }
            }
        }
    }
    // Bernstein ratio bounded per derivative pair
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let f = random_field(lat, &bank, 200 + seed);
        for j in 1..bank.top {
            for (k1, k2, cap) in [(0usize, 1usize, 4.0f64), (1, 0, 10.0)] {
                let r = bernstein_ratio(&f, j, k1, k2, &bank)?;
                if r > cap {
                    bail!("Bernstein ratio ({k1},{k2}) at j={j}: {r} > {cap}");
                }
                worst = worst.max(r);
            }
        }
    }
    // interpolation inequality with measured constant <= 4
    let (s0, s1, theta) = (-0.4f64, 1.2f64, 0.35f64);
    let st = theta * s0 + (1.0 - theta) * s1;
    for seed in 0..10u64 {
        let f = random_field(lat, &bank, 300 + seed);
        let n_mid = holder_norm(&f, &HolderSpec::new(st, 0.0), &bank)?;
        let n0 = holder_norm(&f, &HolderSpec::new(s0, 0.0), &bank)?;
        let n1 = holder_norm(&f, &HolderSpec::new(s1, 0.0), &bank)?;
        let c = n_mid / (n0.powf(theta) * n1.powf(1.0 - theta));
        if c > 4.0 {
            bail!("interpolation constant {c} > 4");
        }
    }
    Ok(format!("partition/reconstruction/bernstein(max {worst:.2})/interpolation ok"))
}

pub fn suite_paraproduct() -> Result<String> {
    let (lat, bank) = desk();
    for seed in 0..4u64 {
        let f = random_field(lat, &bank, 400 + seed);
        let g = random_field(lat, &bank, 500 + seed);
        let triple = para::bony_decompose(&f, &g, &bank)?;
        let sum = triple.sum();
        let prod = f.pointwise_mul(&g);
        let scale = prod.max_abs().max(1.0);
        let err = sum.sub(&prod).max_abs();
        if err > 1e-10 * scale {
            bail!("Bony identity residual {err:.3e}");
        }
    }
    // smooth-case drift product identity
    let kb = 2.0 * std::f64::consts::PI / lat.lx();
    let ku = 3.0 * std::f64::consts::PI / lat.lv();
    let mut b = LatticeField::zeros(lat, 1);
    b.set_component(0, &LatticeField::from_fn(lat, |z| (kb * z[0]).sin()).values);
    let u = LatticeField::from_fn(lat, |z| (ku * z[1]).cos());
    let out = para::drift_gradient_product(&b, &LatticeField::zeros(lat, 1), &u, &bank)?;
    let expect = LatticeField::from_fn(lat, |z| -(kb * z[0]).sin() * ku * (ku * z[1]).sin());
    let err = out.sub(&expect).max_abs();
    if err > 1e-8 * expect.max_abs() {
        bail!("smooth drift product error {err:.3e}");
    }
    Ok("bony identity / drift product ok".into())
}

pub fn suite_kernel() -> Result<String> {
    // scaling identity at pseudo-random tuples
    let mut state = 7u64;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..1000 {
        let lam = 0.2 + 3.0 * next();
        let t = 0.1 + 2.0 * next();
        let x = [2.0 * next() - 1.0];
        let v = [2.0 * next() - 1.0];
        let lhs = kernel_density(lam * t, &x, &v)?;
        let rhs = lam.powi(-2)
            * kernel_density(t, &[x[0] / lam.powf(1.5)], &[v[0] / lam.sqrt()])?;
        if (lhs - rhs).abs() > 1e-12 * lhs.abs().max(1e-300) {
            bail!("scaling identity broken at lam={lam}, t={t}");
        }
    }
    let lat = AnisotropicLattice::new(
        1,
        128,
        128,
        1.5 * std::f64::consts::PI,
        6.0 * std::f64::consts::PI,
    )?;
    for t in [0.25, 1.0] {
        let mut mass = 0.0;
        for flat in 0..lat.node_count() {
            let z = lat.node_coordinates(flat);
            mass += kernel_density(t, &z[..1], &z[1..])?;
        }
        mass *= lat.cell_volume();
        if (mass - 1.0).abs() > 1e-6 {
            bail!("kernel mass at t={t}: {mass}");
        }
    }
    let bx = std::f64::consts::PI / lat.lx();
    let bv = std::f64::consts::PI / lat.lv();
    let f = LatticeField::from_fn(lat, |z| (bx * z[0]).cos() * (2.0 * bv * z[1]).sin() + 1.0);
    let two = semigroup_apply(0.25, &semigroup_apply(0.25, &f)?)?;
    let one = semigroup_apply(0.5, &f)?;
    let law = two.sub(&one).max_abs();
    if law > 1e-6 {
        bail!("semigroup law residual {law:.3e}");
    }
    if (one.mean() - f.mean()).abs() > 1e-8 {
        bail!("mass conservation broken");
    }
    Ok(format!("scaling/mass/semigroup-law({law:.1e}) ok"))
}

pub fn suite_solver() -> Result<String> {
    let lat = AnisotropicLattice::new(
        1,
        64,
        64,
        1.5 * std::f64::consts::PI,
        6.0 * std::f64::consts::PI,
    )?;
    let bank = build_filter_bank(&lat)?;
    let grid = TimeGrid::new(1.0, 32)?;
    let prop = KineticPropagator::for_grid(lat, &grid);
    let kx = std::f64::consts::PI / lat.lx();
    let lv = lat.lv();
    let window = move |v: f64| {
        let c = 0.5 * (1.0 + (std::f64::consts::PI * v / lv).cos());
        c * c * c * c
    };
    let f = SpaceTimeField::from_fn(grid, lat, |t, z| (1.0 + t) * (kx * z[0]).sin() * window(z[1]));
    let problem = PdeProblem { drift: Drift::Zero, forcing: f.clone(), lambda: 1.0 };
    let (u, rep) = solver::picard_solve(&problem, &bank, &prop, &PicardOptions::default())?;
    if rep.iterations != 1 {
        bail!("zero-drift solve took {} iterations", rep.iterations);
    }
    let pass = DuhamelPass::new(1.0, &f, &prop, Quadrature::LeftEndpoint)?;
    let direct = pass.evaluate(grid.steps)?;
    if u.slices[grid.steps].sub(&direct).max_abs() != 0.0 {
        bail!("zero drift does not reduce to the Duhamel operator");
    }
    // maximum bound on smooth data
    if u.sup_norm() > 1.05 * grid.t_end * f.sup_norm() {
        bail!("maximum bound violated");
    }
    Ok("duhamel reduction / max bound ok".into())
}

pub fn suite_gaussian() -> Result<String> {
    let lat = AnisotropicLattice::new(1, 65536, 2, std::f64::consts::PI, std::f64::consts::PI)?;
    let spec = SpectralMeasureSpec::riesz(1, 2.0 / 3.0)?;
    let a = gaussian::sample_field(&spec, &lat, 9)?;
    let b = gaussian::sample_field(&spec, &lat, 9)?;
    if a.field.values != b.field.values {
        bail!("sampling not deterministic");
    }
    let div = krl_core::holder::divergence_v(&a.field)?;
    if div.max_abs() != 0.0 {
        bail!("div_v of v-constant field not machine zero");
    }
    let bank = build_filter_bank(&lat)?;
    let rep = gaussian::block_decay_slope(&spec, &lat, &bank, 16, 77, 1..=4, 2.0)?;
    if (rep.slope - 0.5).abs() > 0.15 {
        bail!("gamma=2/3 slope {} not near 0.5", rep.slope);
    }
    Ok(format!("determinism/divergence/slope({:.3}) ok", rep.slope))
}

pub fn suite_sde() -> Result<String> {
    let cfg = SdeConfig {
        d: 1,
        z0: vec![0.0, 0.0],
        t_end: 1.0,
        steps: 64,
        paths: 4000,
        master_seed: 5,
        b2: None,
    };
    let e = sde::simulate_ensemble(&cfg, &DriftSource::Analytic(AnalyticDrift::Zero))?;
    let e2 = sde::simulate_ensemble(&cfg, &DriftSource::Analytic(AnalyticDrift::Zero))?;
    if e.states != e2.states {
        bail!("ensemble not reproducible");
    }
    let k = e.grid.steps;
    let t = e.grid.t_end;
    let m = e.paths as f64;
    let (mut sx2, mut sv2, mut sxv) = (0.0, 0.0, 0.0);
    for p in 0..e.paths {
        let s = e.state(p, k);
        sx2 += s[0] * s[0];
        sv2 += s[1] * s[1];
        sxv += s[0] * s[1];
    }
    let (vx, vv, cv) = (sx2 / m, sv2 / m, sxv / m);
    let tol = 4.0 * (2.0f64 / m).sqrt();
    if (vx / (2.0 * t * t * t / 3.0) - 1.0).abs() > tol
        || (vv / (2.0 * t) - 1.0).abs() > tol
        || (cv / (t * t) - 1.0).abs() > 2.0 * tol
    {
        bail!("free-flow moments off: VarX={vx}, VarV={vv}, Cov={cv}");
    }
    let flat = AnisotropicLattice::new(1, 8, 8, 30.0, 30.0)?;
    let one = LatticeField::constant(flat, 1.0);
    let vals = sde::functional_integral(&e, &Functional::Static(&one), 0.0, 1.0)?;
    if vals.iter().any(|v| (v - 1.0).abs() > 1e-12) {
        bail!("unit functional integral wrong");
    }
    let rows = sde::moment_report(&e, &[0.0]);
    if rows[0].ratio != 1.0 {
        bail!("delta=0 moment ratio not exactly 1");
    }
    let _ = stats::mean(&vals);
    Ok("determinism/free moments/functionals ok".into())
}

pub fn run(filter: Option<&str>, corrupt_bank: bool) -> Vec<SuiteResult> {
    let suites: Vec<(&'static str, Box<dyn Fn() -> Result<String>>)> = vec![
        ("lattice", Box::new(move || suite_lattice(corrupt_bank))),
        ("paraproduct", Box::new(suite_paraproduct)),
        ("kernel", Box::new(suite_kernel)),
        ("solver", Box::new(suite_solver)),
        ("gaussian", Box::new(suite_gaussian)),
        ("sde", Box::new(suite_sde)),
    ];
    let mut out = Vec::new();
    for (name, f) in suites {
        if let Some(want) = filter {
            if want != name {
                continue;
            }
        }
        let result = f();
        out.push(match result {
            Ok(detail) => SuiteResult { name, passed: true, detail },
            Err(e) => SuiteResult { name, passed: false, detail: format!("{e}") },
        });
    }
    out
}
