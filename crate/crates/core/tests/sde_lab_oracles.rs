//! Monte Carlo behavior of the SDE harness: drift-functional convergence
//! along mollification levels, mollifier independence, stderr scaling of
//! the Holder fit, and ratio stability of the window scan as the ensemble
//! doubles.

use krl_core::filter::build_filter_bank;
use krl_core::gaussian::{sample_field, SpectralMeasureSpec};
use krl_core::lattice::{AnisotropicLattice, LatticeField};
use krl_core::mollify::{mollify_drift, BumpKind, MollifierSpec};
use krl_core::sde::{
    drift_functional_cauchy, holder_exponent_of_a, krylov_scan, simulate_ensemble, AnalyticDrift,
    DriftSource, Functional, KrylovParams, SdeConfig,
};

fn gaussian_drift_lattice() -> AnisotropicLattice {
    AnisotropicLattice::new(1, 4096, 2, 4.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI)
        .unwrap()
}

fn cfg(paths: usize, steps: usize, seed: u64) -> SdeConfig {
    SdeConfig { d: 1, z0: vec![0.0, 0.0], t_end: 1.0, steps, paths, master_seed: seed, b2: None }
}

#[test]
fn smooth_drift_cauchy_hits_noise_floor_early() {
    // a drift that is already smooth: consecutive mollification differences
    // drop to the Monte Carlo noise floor at small n
    let lat = gaussian_drift_lattice();
    let smooth = {
        let k = std::f64::consts::PI / lat.lx();
        let mut b = LatticeField::zeros(lat, 1);
        b.set_component(0, &LatticeField::from_fn(lat, |z| (2.0 * k * z[0]).sin()).values);
        b
    };
    let b16 = mollify_drift(&smooth, &MollifierSpec::new(BumpKind::Exponential, 16)).unwrap();
    let e = simulate_ensemble(&cfg(400, 128, 5), &DriftSource::Field(b16)).unwrap();
    let rep = drift_functional_cauchy(
        &e,
        &smooth,
        &[4, 8],
        16,
        MollifierSpec::new(BumpKind::Exponential, 16),
        MollifierSpec::new(BumpKind::Quartic, 16),
    )
    .unwrap();
    // the n=8 vs n=16 difference is tiny for a smooth drift
    let last = rep.rows.last().unwrap();
    assert!(
        last.sup_l2_diff < 2.0 * (rep.noise_floor + 1e-3),
        "smooth-drift difference {} above noise scale {}",
        last.sup_l2_diff,
        rep.noise_floor
    );
}

#[test]
fn gaussian_drift_cauchy_monotone_and_bump_independent() {
    let lat = gaussian_drift_lattice();
    let spec = SpectralMeasureSpec::riesz(1, 5.0 / 6.0).unwrap();
    let raw = sample_field(&spec, &lat, 31).unwrap().field;
    let raw = raw.scaled(1.0 / raw.max_abs());
    let reference = 64u32;
    let b_ref = mollify_drift(&raw, &MollifierSpec::new(BumpKind::Exponential, reference)).unwrap();
    let e = simulate_ensemble(&cfg(600, 256, 11), &DriftSource::Field(b_ref)).unwrap();
    let rep = drift_functional_cauchy(
        &e,
        &raw,
        &[4, 8, 16, 32],
        reference,
        MollifierSpec::new(BumpKind::Exponential, reference),
        MollifierSpec::new(BumpKind::Quartic, reference),
    )
    .unwrap();
    // monotone within noise: each consecutive difference may exceed the next
    // by at most its own uncertainty band
    for w in rep.rows.windows(2) {
        assert!(
            w[1].sup_l2_diff <= w[0].sup_l2_diff + 2.0 * (w[0].stderr + w[1].stderr),
            "not monotone within noise: {} then {}",
            w[0].sup_l2_diff,
            w[1].sup_l2_diff
        );
    }
    // two base bumps at the top level agree within 3x the noise floor
    assert!(
        rep.bump_independence <= 3.0 * rep.noise_floor.max(rep.bump_independence_stderr),
        "bump dependence {} vs floor {}",
        rep.bump_independence,
        rep.noise_floor
    );
}

#[test]
fn holder_fit_stderr_halves_when_paths_double() {
    let lat = AnisotropicLattice::new(1, 64, 64, 8.0, 8.0).unwrap();
    let bank = build_filter_bank(&lat).unwrap();
    // oscillatory bounded observable
    let noise = {
        use krl_core::rng::NormalSource;
        let mut src = NormalSource::substream(77, 0);
        LatticeField::new(lat, 1, (0..lat.node_count()).map(|_| src.next_normal()).collect())
            .unwrap()
    };
    let f = krl_core::block_apply(&noise, 2, &bank).unwrap();
    let f = f.scaled(1.0 / f.max_abs());
    let gaps = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0];
    let run = |paths: usize| {
        let e = simulate_ensemble(&cfg(paths, 256, 13), &DriftSource::Analytic(AnalyticDrift::Zero))
            .unwrap();
        holder_exponent_of_a(&e, &Functional::Static(&f), 4.0, &gaps).unwrap()
    };
    let a = run(1500);
    let b = run(3000);
    let shrink = b.fitted_stderr / a.fitted_stderr;
    // doubling M should halve the stderr of the fit, within 30%
    assert!(
        (0.35..=0.65 * 1.3).contains(&shrink),
        "stderr shrink {shrink} ({} -> {})",
        a.fitted_stderr,
        b.fitted_stderr
    );
}

#[test]
fn krylov_ratios_stable_as_paths_double() {
    let lat = AnisotropicLattice::new(1, 64, 64, 8.0, 8.0).unwrap();
    let bank = build_filter_bank(&lat).unwrap();
    let noise = {
        use krl_core::rng::NormalSource;
        let mut src = NormalSource::substream(78, 0);
        LatticeField::new(lat, 1, (0..lat.node_count()).map(|_| src.next_normal()).collect())
            .unwrap()
    };
    let f = krl_core::block_apply(&noise, 2, &bank).unwrap();
    let f = f.scaled(1.0 / f.max_abs());
    let params = KrylovParams {
        alpha: 0.0,
        q: f64::INFINITY,
        p: 4.0,
        windows: vec![1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0],
        delta: 0.0,
        kappa: 0.0,
    };
    let run = |paths: usize| {
        let e = simulate_ensemble(&cfg(paths, 256, 21), &DriftSource::Analytic(AnalyticDrift::Zero))
            .unwrap();
        let rep = krylov_scan(&e, &Functional::Static(&f), 1.0, &params).unwrap();
        rep.rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max)
    };
    let a = run(1000);
    let b = run(2000);
    assert!(a.is_finite() && b.is_finite());
    let ratio = a / b;
    assert!((0.5..=2.0).contains(&ratio), "max window ratio unstable: {a} vs {b}");
}
