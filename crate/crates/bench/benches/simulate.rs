//! Path-simulation throughput: free flow and interpolated-field drift.

use criterion::{black_box, criterion_group, criterion_main, Criterion};

use krl_core::gaussian::{sample_field, SpectralMeasureSpec};
use krl_core::lattice::AnisotropicLattice;
use krl_core::sde::{simulate_ensemble, AnalyticDrift, DriftSource, SdeConfig};

fn config(paths: usize) -> SdeConfig {
    SdeConfig {
        d: 1,
        z0: vec![0.0, 0.0],
        t_end: 1.0,
        steps: 256,
        paths,
        master_seed: 42,
        b2: None,
    }
}

fn bench_simulate(c: &mut Criterion) {
    let cfg = config(1024);
    c.bench_function("free_flow_1024x256", |b| {
        b.iter(|| {
            simulate_ensemble(black_box(&cfg), &DriftSource::Analytic(AnalyticDrift::Zero))
                .unwrap()
        })
    });

    let lat =
        AnisotropicLattice::new(1, 4096, 2, 4.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI)
            .unwrap();
    let spec = SpectralMeasureSpec::riesz(1, 5.0 / 6.0).unwrap();
    let field = sample_field(&spec, &lat, 7).unwrap().field;
    let drift = DriftSource::Field(field.scaled(1.0 / field.max_abs()));
    c.bench_function("field_drift_1024x256", |b| {
        b.iter(|| simulate_ensemble(black_box(&cfg), &drift).unwrap())
    });
}

criterion_group!(benches, bench_simulate);
criterion_main!(benches);
