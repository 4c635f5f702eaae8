//! Cross-checks between the Monte Carlo simulator and the analytic kinetic
//! kernel: occupation functionals against semigroup quadrature, and the
//! joint endpoint law against direct kernel quadrature.

use krl_core::filter::apply_multiplier;
use krl_core::kernel::{kernel_density, shear_apply};
use krl_core::lattice::{AnisotropicLattice, LatticeField};
use krl_core::sde::{
    functional_integral, simulate_ensemble, AnalyticDrift, DriftSource, Functional, SdeConfig,
};
use krl_core::stats;

/// Forward transition expectation `E f(Z_t^{z})` of the free flow:
/// convolution with the sampled kernel followed by the forward shear
/// `x + t v` (the reverse of the semigroup's shear).
fn forward_expectation(t: f64, f: &LatticeField) -> LatticeField {
    let lat = f.lattice;
    let n = lat.node_count();
    let d = lat.d();
    let mut kern = vec![0.0f64; n];
    let mut mass = 0.0;
    for (flat, slot) in kern.iter_mut().enumerate() {
        // offset layout per axis
        let mut idx = flat;
        let axes = lat.num_axes();
        let mut coords = vec![0.0f64; axes];
        for a in (0..axes).rev() {
            let na = lat.axis_len(a);
            coords[a] = lat.offset_coordinate(a, idx % na);
            idx /= na;
        }
        let val = kernel_density(t, &coords[..d], &coords[d..]).unwrap();
        *slot = val;
        mass += val;
    }
    let scale = 1.0 / mass;
    for k in kern.iter_mut() {
        *k *= scale;
    }
    let mut spec = krl_core::fft::forward(&lat, &kern);
    let mult: Vec<f64> = spec.drain(..).map(|c| c.re * n as f64).collect();
    let conv = apply_multiplier(f, &mult).unwrap();
    shear_apply(-t, &conv).unwrap()
}

#[test]
fn occupation_functional_matches_semigroup_quadrature() {
    // E int_0^T f(Z_s) ds = sum_s (P~_s f)(z0) dt for the drift-free flow
    // Nv fine enough that multilinear interpolation of f along paths is
    // bias-free at the Monte Carlo resolution (bias ~ hv^2 f'' / 8)
    let lat = AnisotropicLattice::new(
        1,
        128,
        512,
        1.5 * std::f64::consts::PI,
        6.0 * std::f64::consts::PI,
    )
    .unwrap();
    let bx = std::f64::consts::PI / lat.lx();
    let bv = std::f64::consts::PI / lat.lv();
    let f = LatticeField::from_fn(lat, |z| (bx * z[0]).cos() * (2.0 * bv * z[1]).cos());
    let steps = 16usize;
    let cfg = SdeConfig {
        d: 1,
        z0: vec![0.0, 0.0],
        t_end: 1.0,
        steps,
        paths: 40_000,
        master_seed: 2718,
        b2: None,
    };
    let e = simulate_ensemble(&cfg, &DriftSource::Analytic(AnalyticDrift::Zero)).unwrap();
    let vals = functional_integral(&e, &Functional::Static(&f), 0.0, 1.0).unwrap();
    let (mc, se) = stats::mean_stderr(&vals);
    // quadrature: left-endpoint in time, z0 on a grid node
    let z0_flat = lat.flat_index(&[lat.nx() / 2, lat.nv() / 2]);
    let dt = 1.0 / steps as f64;
    let mut quad = f.values[z0_flat] * dt; // s = 0 term: P~_0 = id
    for k in 1..steps {
        let pf = forward_expectation(k as f64 * dt, &f);
        quad += pf.values[z0_flat] * dt;
    }
    assert!(
        (mc - quad).abs() <= 3.0 * se,
        "MC {mc} +- {se} vs quadrature {quad}"
    );
}

#[test]
fn endpoint_law_matches_kernel_quadrature() {
    // joint moments of (X_T, V_T) under b = 0 against quadrature of p_T
    let t = 0.8;
    let cfg = SdeConfig {
        d: 1,
        z0: vec![0.0, 0.0],
        t_end: t,
        steps: 32,
        paths: 40_000,
        master_seed: 99,
        b2: None,
    };
    let e = simulate_ensemble(&cfg, &DriftSource::Analytic(AnalyticDrift::Zero)).unwrap();
    // kernel quadrature of test moments on a fine grid
    let lat = AnisotropicLattice::new(1, 256, 256, 8.0, 8.0).unwrap();
    let mut moments_quad = [0.0f64; 5]; // x^2, v^2, xv, x^2 v^2, cos(x+v)
    let mut mass = 0.0;
    for flat in 0..lat.node_count() {
        let z = lat.node_coordinates(flat);
        let p = kernel_density(t, &z[..1], &z[1..]).unwrap();
        mass += p;
        moments_quad[0] += p * z[0] * z[0];
        moments_quad[1] += p * z[1] * z[1];
        moments_quad[2] += p * z[0] * z[1];
        moments_quad[3] += p * z[0] * z[0] * z[1] * z[1];
        moments_quad[4] += p * (z[0] + z[1]).cos();
    }
    for m in moments_quad.iter_mut() {
        *m /= mass;
    }
    let samples: Vec<[f64; 5]> = (0..e.paths)
        .map(|p| {
            let s = e.state(p, e.grid.steps);
            [s[0] * s[0], s[1] * s[1], s[0] * s[1], s[0] * s[0] * s[1] * s[1], (s[0] + s[1]).cos()]
        })
        .collect();
    for (i, &exact) in moments_quad.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
        let (m, se) = stats::mean_stderr(&col);
        assert!(
            (m - exact).abs() <= 3.5 * se,
            "moment {i}: MC {m} +- {se} vs quadrature {exact}"
        );
    }
}

#[test]
fn odd_velocity_mode_is_preserved_near_center() {
    // P_t applied to a v1-proxy (odd low mode) stays put: the w-variable of
    // the drift-free kernel has mean zero
    let lat = AnisotropicLattice::new(
        1,
        128,
        128,
        1.5 * std::f64::consts::PI,
        6.0 * std::f64::consts::PI,
    )
    .unwrap();
    let bv = std::f64::consts::PI / lat.lv();
    let f = LatticeField::from_fn(lat, |z| (bv * z[1]).sin());
    let moved = krl_core::semigroup_apply(0.5, &f).unwrap();
    // compare at the center column (x = v = small): damping only
    let center = lat.flat_index(&[lat.nx() / 2, lat.nv() / 2 + lat.nv() / 8]);
    let ratio = moved.values[center] / f.values[center];
    assert!((ratio - 1.0).abs() < 2e-2, "v-mode ratio {ratio}");
}
