//! Experiment pipelines behind the subcommands. Each run resolves its
//! configuration (defaults recorded), writes `config.echo` plus CSV/field
//! outputs into the output directory, and is byte-reproducible from the
//! echo at any worker count.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};

use krl_core::filter::build_filter_bank;
use krl_core::gaussian::{self, MeasureKind, SpectralMeasureSpec};
use krl_core::io::{self, CsvWriter};
use krl_core::kernel::{KineticPropagator, SpaceTimeField, TimeGrid};
use krl_core::lattice::{AnisotropicLattice, LatticeField};
use krl_core::mollify::{is_v_constant, mollify_drift, BumpKind, MollifierSpec};
use krl_core::sde::{
    self, AnalyticDrift, DriftSource, Functional, KrylovParams, PathEnsemble, SdeConfig,
};
use krl_core::solver::{self, Drift, PdeProblem, PicardOptions, SchauderParams};
use krl_core::stats;

use crate::config::ExperimentConfig;

const LATTICE_KEYS: &[&str] =
    &["lattice.d", "lattice.nx", "lattice.nv", "lattice.lx", "lattice.lv"];
const TIME_KEYS: &[&str] = &["time.t_end", "time.steps"];
const DRIFT_KEYS: &[&str] = &[
    "drift.kind",
    "drift.constant",
    "drift.gamma",
    "drift.amplitude",
    "drift.seed",
    "drift.file",
    "mollifier.n",
    "mollifier.bump",
];
const OUT_KEYS: &[&str] = &["output.dir", "output.format"];

fn keyset(groups: &[&'static [&'static str]]) -> Vec<&'static str> {
    groups.iter().flat_map(|g| g.iter().copied()).collect()
}

pub struct RunContext {
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn prepare(cfg: &mut ExperimentConfig, cmd: &str, out_flag: Option<PathBuf>) -> Result<Self> {
        let out_dir = match out_flag {
            Some(p) => {
                cfg.set("output.dir", p.display().to_string());
                p
            }
            None => PathBuf::from(cfg.get_or("output.dir", &format!("krl-out-{cmd}"))),
        };
        std::fs::create_dir_all(&out_dir)?;
        Ok(Self { out_dir })
    }

    pub fn finish(&self, cfg: &ExperimentConfig) -> Result<()> {
        cfg.write_echo(&self.out_dir.join("config.echo"))?;
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

fn lattice_from(cfg: &mut ExperimentConfig, defaults: (usize, usize, usize, f64, f64)) -> Result<AnisotropicLattice> {
    let d = cfg.usize_or("lattice.d", defaults.0)?;
    let nx = cfg.usize_or("lattice.nx", defaults.1)?;
    let nv = cfg.usize_or("lattice.nv", defaults.2)?;
    let lx = cfg.f64_or("lattice.lx", defaults.3)?;
    let lv = cfg.f64_or("lattice.lv", defaults.4)?;
    Ok(AnisotropicLattice::new(d, nx, nv, lx, lv)?)
}

fn grid_from(cfg: &mut ExperimentConfig, t_default: f64, k_default: usize) -> Result<TimeGrid> {
    let t = cfg.f64_or("time.t_end", t_default)?;
    let k = cfg.usize_or("time.steps", k_default)?;
    Ok(TimeGrid::new(t, k)?)
}

fn bump_from(name: &str) -> Result<BumpKind> {
    match name {
        "exponential" => Ok(BumpKind::Exponential),
        "quartic" => Ok(BumpKind::Quartic),
        other => bail!("mollifier.bump must be exponential or quartic, got {other}"),
    }
}

/// Gaussian drift pipeline shared by the SDE and PDE commands: sample the
/// power-law field, normalize its sup to `drift.amplitude`, mollify at
/// `mollifier.n`.
pub struct BuiltDrift {
    pub source: DriftSource,
    /// static PDE-side drift (v-constant fields have exactly zero
    /// divergence)
    pub pde: Drift,
    pub label: String,
}

pub fn build_drift(
    cfg: &mut ExperimentConfig,
    lat: &AnisotropicLattice,
    master_seed: u64,
) -> Result<BuiltDrift> {
    let kind = cfg.get_or("drift.kind", "zero");
    match kind.as_str() {
        "zero" => Ok(BuiltDrift {
            source: DriftSource::Analytic(AnalyticDrift::Zero),
            pde: Drift::Zero,
            label: "zero".into(),
        }),
        "constant" => {
            let c = cfg.f64_list_or("drift.constant", "0.5")?;
            if c.len() != lat.d() {
                bail!("drift.constant needs {} components", lat.d());
            }
            let mut b = LatticeField::zeros(*lat, lat.d());
            for (i, ci) in c.iter().enumerate() {
                b.set_component(i, &vec![*ci; lat.node_count()]);
            }
            Ok(BuiltDrift {
                source: DriftSource::Analytic(AnalyticDrift::Constant(c)),
                pde: Drift::Static { b, div_b: LatticeField::zeros(*lat, 1) },
                label: "constant".into(),
            })
        }
        "gaussian" => {
            let gamma = cfg.f64_or("drift.gamma", 5.0 / 6.0 * lat.d() as f64)?;
            let amplitude = cfg.f64_or("drift.amplitude", 1.0)?;
            let seed = cfg.u64_or("drift.seed", master_seed ^ 0xD21F7)?;
            let level = cfg.u32_or("mollifier.n", 16)?;
            let bump = bump_from(&cfg.get_or("mollifier.bump", "exponential"))?;
            let spec = SpectralMeasureSpec::riesz(lat.d(), gamma)?;
            spec.validate_for_sde()?;
            let sample = gaussian::sample_field(&spec, lat, seed)?;
            let sup = sample.field.max_abs();
            let raw = sample.field.scaled(amplitude / sup);
            let mollified = mollify_drift(&raw, &MollifierSpec::new(bump, level))?;
            Ok(BuiltDrift {
                source: DriftSource::Field(mollified.clone()),
                pde: Drift::Static {
                    b: mollified,
                    div_b: LatticeField::zeros(*lat, 1),
                },
                label: format!("gaussian(gamma={gamma}, n={level})"),
            })
        }
        "file" => {
            let path = cfg.get_or("drift.file", "");
            if path.is_empty() {
                bail!("drift.kind=file requires drift.file");
            }
            let b = io::read_field(Path::new(&path))?;
            if b.lattice != *lat {
                bail!("drift file lattice does not match the configured lattice");
            }
            if !is_v_constant(&b) {
                bail!("file drifts must be velocity-independent (div_v b = 0 is assumed)");
            }
            Ok(BuiltDrift {
                source: DriftSource::Field(b.clone()),
                pde: Drift::Static { b: b.clone(), div_b: LatticeField::zeros(*lat, 1) },
                label: "file".into(),
            })
        }
        other => bail!("drift.kind must be zero|constant|gaussian|file, got {other}"),
    }
}

/// Smooth velocity window vanishing at the wrap seam (band-limited: nine
/// cosine modes).
pub fn v_window(lat: &AnisotropicLattice, v: f64) -> f64 {
    let c = 0.5 * (1.0 + (std::f64::consts::PI * v / lat.lv()).cos());
    c * c * c * c
}

/// Canonical forcing of the PDE commands: a low position mode times the
/// velocity window, with a mild time ramp.
pub fn standard_forcing(
    cfg: &mut ExperimentConfig,
    grid: TimeGrid,
    lat: &AnisotropicLattice,
) -> Result<SpaceTimeField> {
    let kx_mult = cfg.f64_or("forcing.kx_mult", 1.0)?;
    let slope = cfg.f64_or("forcing.time_slope", 0.5)?;
    let kx = kx_mult * std::f64::consts::PI / lat.lx();
    let lat_c = *lat;
    Ok(SpaceTimeField::from_fn(grid, lat_c, move |t, z| {
        let mut s = (kx * z[0]).sin();
        for i in 1..lat_c.d() {
            s *= (kx * z[i]).cos();
        }
        let mut w = 1.0;
        for i in 0..lat_c.d() {
            w *= v_window(&lat_c, z[lat_c.d() + i]);
        }
        (1.0 + slope * t) * s * w
    }))
}

// ---------------------------------------------------------------------
// sample-field / besov-slope
// ---------------------------------------------------------------------

pub fn cmd_sample_field(cfg: &mut ExperimentConfig, ctx: &RunContext, seed_flag: Option<u64>) -> Result<()> {
    let allowed = keyset(&[
        LATTICE_KEYS,
        OUT_KEYS,
        &["sde.seed", "field.gamma", "field.samples", "field.p", "field.jmin", "field.jmax"],
    ]);
    cfg.check_keys(&allowed)?;
    let lat = lattice_from(cfg, (1, 65536, 2, std::f64::consts::PI, std::f64::consts::PI))?;
    let master = resolve_seed(cfg, seed_flag)?;
    let gamma = cfg.f64_or("field.gamma", 2.0 / 3.0)?;
    let spec = SpectralMeasureSpec::riesz(lat.d(), gamma)?;
    let sample = gaussian::sample_field(&spec, &lat, master)?;
    io::write_field(&ctx.path("field.krlf"), &sample.field)?;
    besov_blocks(cfg, ctx, &spec, &lat)?;
    ctx.finish(cfg)
}

pub fn cmd_besov_slope(cfg: &mut ExperimentConfig, ctx: &RunContext, seed_flag: Option<u64>) -> Result<()> {
    let allowed = keyset(&[
        LATTICE_KEYS,
        OUT_KEYS,
        &[
            "sde.seed",
            "field.gamma",
            "field.samples",
            "field.p",
            "field.jmin",
            "field.jmax",
            "drift.file",
        ],
    ]);
    cfg.check_keys(&allowed)?;
    let file = cfg.get_or("drift.file", "");
    if !file.is_empty() {
        // analyze a stored field
        let f = io::read_field(Path::new(&file))?;
        let lat = f.lattice;
        let bank = build_filter_bank(&lat)?;
        let p = cfg.f64_or("field.p", 2.0)?;
        let jmin = cfg.usize_or("field.jmin", 1)?;
        let jmax = cfg.usize_or("field.jmax", bank.top.saturating_sub(1))?;
        let scalar = LatticeField::from_component(lat, f.component(0));
        let blocks = krl_core::filter::block_decompose(&scalar, &bank)?;
        let mut w = CsvWriter::create(&ctx.path("blocks.csv"), "j,mean_block_norm,stderr", true)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for j in jmin..=jmax {
            let norm = stats::empirical_lp(&blocks[j], p);
            w.row(&format!("{j},{norm},0"))?;
            xs.push(j as f64);
            ys.push(norm.log2());
        }
        let (slope, _) = stats::least_squares(&xs, &ys);
        w.comment(&format!("fitted_slope={slope}"))?;
        return ctx.finish(cfg);
    }
    let lat = lattice_from(cfg, (1, 65536, 2, std::f64::consts::PI, std::f64::consts::PI))?;
    let _ = resolve_seed(cfg, seed_flag)?;
    let gamma = cfg.f64_or("field.gamma", 2.0 / 3.0)?;
    let spec = SpectralMeasureSpec::riesz(lat.d(), gamma)?;
    besov_blocks(cfg, ctx, &spec, &lat)?;
    ctx.finish(cfg)
}

fn besov_blocks(
    cfg: &mut ExperimentConfig,
    ctx: &RunContext,
    spec: &SpectralMeasureSpec,
    lat: &AnisotropicLattice,
) -> Result<()> {
    let bank = build_filter_bank(lat)?;
    let samples = cfg.usize_or("field.samples", 48)?;
    let p = cfg.f64_or("field.p", 2.0)?;
    let jmin = cfg.usize_or("field.jmin", 1)?;
    let jmax = cfg.usize_or("field.jmax", bank.top.saturating_sub(1).max(jmin + 3))?;
    let master = cfg.u64_or("sde.seed", 42)?;
    let rep = gaussian::block_decay_slope(spec, lat, &bank, samples, master, jmin..=jmax, p)?;
    let mut w = CsvWriter::create(&ctx.path("blocks.csv"), "j,mean_block_norm,stderr", true)?;
    for ((j, m), se) in rep.j_values.iter().zip(rep.mean_block_norms.iter()).zip(rep.stderrs.iter()) {
        w.row(&format!("{j},{m},{se}"))?;
    }
    let gamma = match spec.kind {
        MeasureKind::RieszXDeltaV { gamma } => gamma,
        _ => f64::NAN,
    };
    let expected = 1.5 * (spec.d as f64 - gamma);
    w.comment(&format!("fitted_slope={} slope_stderr={}", rep.slope, rep.slope_stderr))?;
    w.comment(&format!("expected_slope={expected}"))?;
    let mut s = CsvWriter::create(
        &ctx.path("slope.csv"),
        "gamma,expected_slope,fitted_slope,slope_stderr",
        true,
    )?;
    s.row(&format!("{gamma},{expected},{},{}", rep.slope, rep.slope_stderr))?;
    Ok(())
}

fn resolve_seed(cfg: &mut ExperimentConfig, flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        cfg.set("sde.seed", format!("{s}"));
    }
    cfg.u64_or("sde.seed", 42)
}

// ---------------------------------------------------------------------
// solve-pde
// ---------------------------------------------------------------------

pub fn cmd_solve_pde(cfg: &mut ExperimentConfig, ctx: &RunContext, seed_flag: Option<u64>) -> Result<()> {
    let allowed = keyset(&[
        LATTICE_KEYS,
        TIME_KEYS,
        DRIFT_KEYS,
        OUT_KEYS,
        &[
            "sde.seed",
            "forcing.kx_mult",
            "forcing.time_slope",
            "schauder.lambda_grid",
            "schauder.thetas",
            "schauder.alpha",
            "schauder.q",
            "schauder.alpha_b",
            "schauder.q_b",
            "schauder.kappa",
            "schauder.delta",
            "picard.max_iter",
            "picard.tol",
            "picard.omega",
        ],
    ]);
    cfg.check_keys(&allowed)?;
    let pi = std::f64::consts::PI;
    let lat = lattice_from(cfg, (1, 256, 256, pi, 4.0 * pi))?;
    let grid = grid_from(cfg, 1.0, 128)?;
    let master = resolve_seed(cfg, seed_flag)?;
    let bank = build_filter_bank(&lat)?;
    let prop = KineticPropagator::for_grid(lat, &grid);
    let drift = build_drift(cfg, &lat, master)?;
    let forcing = standard_forcing(cfg, grid, &lat)?;
    let alpha_b = cfg.f64_or("schauder.alpha_b", -0.25)?;
    let q_b = cfg.f64_or("schauder.q_b", f64::INFINITY)?;
    let params = SchauderParams {
        alpha_b,
        q_b,
        kappa: cfg.f64_or("schauder.kappa", 0.0)?,
        alpha: cfg.f64_or("schauder.alpha", alpha_b)?,
        q: cfg.f64_or("schauder.q", f64::INFINITY)?,
        delta: cfg.f64_or("schauder.delta", 0.0)?,
        lambdas: cfg.f64_list_or("schauder.lambda_grid", "0,1,4,16,64")?,
        thetas: cfg.f64_list_or("schauder.thetas", "0,0.5,1")?,
    };
    let opts = PicardOptions {
        max_iter: cfg.usize_or("picard.max_iter", grid.steps + 1)?,
        tol: cfg.f64_or("picard.tol", 1e-8)?,
        omega: cfg.f64_or("picard.omega", 1.0)?,
        quadrature: krl_core::Quadrature::LeftEndpoint,
    };
    // reference solve at the first lambda, persisted as a manifest
    let problem =
        PdeProblem { drift: drift.pde.clone(), forcing: forcing.clone(), lambda: params.lambdas[0] };
    let (u, rep) = solver::picard_solve(&problem, &bank, &prop, &opts)?;
    io::write_space_time(&ctx.path("solution"), &u)?;
    let report = solver::schauder_scan(&drift.pde, &forcing, &params, &bank, &prop, &opts)?;
    let mut w = CsvWriter::create(&ctx.path("schauder.csv"), "lambda,theta,u_norm,f_norm,ratio", true)?;
    for row in &report.rows {
        w.row(&format!(
            "{},{},{},{},{}",
            row.lambda, row.theta, row.u_norm, row.f_norm, row.ratio
        ))?;
    }
    w.comment(&format!("nu={}", report.nu))?;
    w.comment(&format!("drift={}", drift.label))?;
    let mut p = CsvWriter::create(&ctx.path("picard.csv"), "lambda,iterations", true)?;
    p.row(&format!("{},{}", params.lambdas[0], rep.iterations))?;
    for (lambda, iters) in &report.picard_iterations {
        p.row(&format!("{lambda},{iters}"))?;
    }
    ctx.finish(cfg)
}

// ---------------------------------------------------------------------
// simulate / krylov / cauchy / moments / ito-test
// ---------------------------------------------------------------------

fn sde_lattice_defaults() -> (usize, usize, usize, f64, f64) {
    let pi = std::f64::consts::PI;
    (1, 4096, 2, 4.0 * pi, 4.0 * pi)
}

fn build_ensemble(
    cfg: &mut ExperimentConfig,
    master: u64,
    lat: &AnisotropicLattice,
) -> Result<(PathEnsemble, BuiltDrift)> {
    let grid = grid_from(cfg, 1.0, 512)?;
    let paths = cfg.usize_or("sde.paths", 10_000)?;
    let z0 = cfg.f64_list_or("sde.z0", &vec!["0"; 2 * lat.d()].join(","))?;
    let drift = build_drift(cfg, lat, master)?;
    let config = SdeConfig {
        d: lat.d(),
        z0,
        t_end: grid.t_end,
        steps: grid.steps,
        paths,
        master_seed: master,
        b2: None,
    };
    let ensemble = sde::simulate_ensemble(&config, &drift.source)?;
    Ok((ensemble, drift))
}

pub fn cmd_simulate(cfg: &mut ExperimentConfig, ctx: &RunContext, seed_flag: Option<u64>) -> Result<()> {
    let allowed = keyset(&[
        LATTICE_KEYS,
        TIME_KEYS,
        DRIFT_KEYS,
        OUT_KEYS,
        &["sde.seed", "sde.paths", "sde.z0"],
    ]);
    cfg.check_keys(&allowed)?;
    let lat = lattice_from(cfg, sde_lattice_defaults())?;
    let master = resolve_seed(cfg, seed_flag)?;
    let (ensemble, drift) = build_ensemble(cfg, master, &lat)?;
    let format = cfg.get_or("output.format", "krle1");
    match format.as_str() {
        "krle1" => io::write_ensemble(&ctx.path("ensemble.krle"), &ensemble)?,
        "csv" => io::write_ensemble_csv(&ctx.path("ensemble.csv"), &ensemble, true)?,
        other => bail!("output.format must be krle1 or csv, got {other}"),
    }
    // final-time moment summary against the drift-free law
    let t = ensemble.grid.t_end;
    let k = ensemble.grid.steps;
    let m = ensemble.paths as f64;
    let d = ensemble.d;
    let mut w = CsvWriter::create(
        &ctx.path("summary.csv"),
        "dim,var_x,var_v,cov_xv,free_var_x,free_var_v,free_cov",
        true,
    )?;
    for i in 0..d {
        let (mut sx, mut sv, mut sx2, mut sv2, mut sxv) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for p in 0..ensemble.paths {
            let s = ensemble.state(p, k);
            sx += s[i];
            sv += s[d + i];
            sx2 += s[i] * s[i];
            sv2 += s[d + i] * s[d + i];
            sxv += s[i] * s[d + i];
        }
        let (mx, mv) = (sx / m, sv / m);
        w.row(&format!(
            "{i},{},{},{},{},{},{}",
            sx2 / m - mx * mx,
            sv2 / m - mv * mv,
            sxv / m - mx * mv,
            2.0 * t * t * t / 3.0,
            2.0 * t,
            t * t
        ))?;
    }
    w.comment(&format!("drift={} poisoned={}", drift.label, ensemble.poisoned_count()))?;
    w.comment(&format!("boundary_excursions={}", ensemble.boundary_excursions))?;
    ctx.finish(cfg)
}

/// Band-limited probe with prescribed negative regularity: unit-sup block
/// fields combined as `sum_j 2^{-j alpha} g_j`, so the `C_a^alpha` norm is
/// about 1 and every dyadic scale contributes.
pub fn multiblock_probe(
    lat: &AnisotropicLattice,
    bank: &krl_core::DyadicFilterBank,
    blocks: &[usize],
    alpha: f64,
    seed: u64,
) -> Result<LatticeField> {
    let mut f = LatticeField::zeros(*lat, 1);
    for (i, &j) in blocks.iter().enumerate() {
        let mut src = krl_core::rng::NormalSource::substream(seed, i as u64);
        let noise = LatticeField::new(
            *lat,
            1,
            (0..lat.node_count()).map(|_| src.next_normal()).collect(),
        )?;
        let gj = krl_core::block_apply(&noise, j, bank)?;
        let sup = gj.max_abs();
        if sup == 0.0 {
            bail!("probe block {j} is empty on this lattice");
        }
        f.add_assign(&gj.scaled(1.0 / sup), 2.0f64.powf(-(j as f64) * alpha));
    }
    Ok(f)
}

pub fn cmd_krylov(cfg: &mut ExperimentConfig, ctx: &RunContext, seed_flag: Option<u64>) -> Result<()> {
    let allowed = keyset(&[
        LATTICE_KEYS,
        TIME_KEYS,
        DRIFT_KEYS,
        OUT_KEYS,
        &[
            "sde.seed",
            "sde.paths",
            "sde.z0",
            "krylov.alpha",
            "krylov.q",
            "krylov.p",
            "krylov.windows",
            "krylov.f_blocks",
            "krylov.f_seed",
            "krylov.probe_n",
            "krylov.probe_l",
        ],
    ]);
    cfg.check_keys(&allowed)?;
    let lat = lattice_from(cfg, sde_lattice_defaults())?;
    let master = resolve_seed(cfg, seed_flag)?;
    let (ensemble, drift) = build_ensemble(cfg, master, &lat)?;
    let alpha = cfg.f64_or("krylov.alpha", -0.5)?;
    let q = cfg.f64_or("krylov.q", f64::INFINITY)?;
    let p = cfg.f64_or("krylov.p", 4.0)?;
    let windows = cfg.f64_list_or("krylov.windows", "1/64,1/32,1/16,1/8,1/4")?;
    let probe_n = cfg.usize_or("krylov.probe_n", 256)?;
    let probe_l = cfg.f64_or("krylov.probe_l", 8.0)?;
    let f_seed = cfg.u64_or("krylov.f_seed", 7)?;
    let probe_lat = AnisotropicLattice::new(lat.d(), probe_n, probe_n, probe_l, probe_l)?;
    let probe_bank = build_filter_bank(&probe_lat)?;
    let blocks: Vec<usize> = cfg
        .u32_list_or("krylov.f_blocks", "1,2,3")?
        .into_iter()
        .map(|b| b as usize)
        .collect();
    let f = multiblock_probe(&probe_lat, &probe_bank, &blocks, alpha, f_seed)?;
    let f_norm = sde::static_f_norm(&f, alpha, q, 0.0, ensemble.grid.t_end, &probe_bank)?;
    let params = KrylovParams { alpha, q, p, windows, delta: 0.0, kappa: 0.0 };
    let report = sde::krylov_scan(&ensemble, &Functional::Static(&f), f_norm, &params)?;
    let mut w = CsvWriter::create(&ctx.path("krylov.csv"), "sigma,lp_norm,lp_stderr,bound,ratio", true)?;
    for r in &report.rows {
        w.row(&format!("{},{},{},{},{}", r.sigma, r.lp_norm, r.lp_stderr, r.bound, r.ratio))?;
    }
    let target = params.target_exponent();
    w.comment(&format!("target_exponent={target}"))?;
    w.comment(&format!("fitted_slope={} slope_stderr={}", report.fitted_slope, report.slope_stderr))?;
    w.comment(&format!("drift={}", drift.label))?;
    // Holder modulus of the same functional
    let hrep = sde::holder_exponent_of_a(&ensemble, &Functional::Static(&f), p, &params.windows)?;
    let mut s = CsvWriter::create(
        &ctx.path("summary.csv"),
        "alpha,q,p,target_exponent,fitted_window_slope,holder_exponent",
        true,
    )?;
    s.row(&format!(
        "{alpha},{q},{p},{target},{},{}",
        report.fitted_slope, hrep.fitted_exponent
    ))?;
    ctx.finish(cfg)
}

pub fn cmd_cauchy(cfg: &mut ExperimentConfig, ctx: &RunContext, seed_flag: Option<u64>) -> Result<()> {
    let allowed = keyset(&[
        LATTICE_KEYS,
        TIME_KEYS,
        OUT_KEYS,
        &[
            "sde.seed",
            "sde.paths",
            "sde.z0",
            "drift.gamma",
            "drift.amplitude",
            "drift.seed",
            "mollifier.bump",
            "cauchy.levels",
            "cauchy.reference",
            "cauchy.alt_bump",
        ],
    ]);
    cfg.check_keys(&allowed)?;
    let lat = lattice_from(cfg, sde_lattice_defaults())?;
    let master = resolve_seed(cfg, seed_flag)?;
    let grid = grid_from(cfg, 1.0, 512)?;
    let paths = cfg.usize_or("sde.paths", 2000)?;
    let z0 = cfg.f64_list_or("sde.z0", &vec!["0"; 2 * lat.d()].join(","))?;
    let gamma = cfg.f64_or("drift.gamma", 5.0 / 6.0 * lat.d() as f64)?;
    let amplitude = cfg.f64_or("drift.amplitude", 1.0)?;
    let dseed = cfg.u64_or("drift.seed", master ^ 0xD21F7)?;
    let levels = cfg.u32_list_or("cauchy.levels", "4,8,16,32")?;
    let reference = cfg.u32_or("cauchy.reference", 64)?;
    let bump_a = bump_from(&cfg.get_or("mollifier.bump", "exponential"))?;
    let bump_b = bump_from(&cfg.get_or("cauchy.alt_bump", "quartic"))?;
    let spec = SpectralMeasureSpec::riesz(lat.d(), gamma)?;
    spec.validate_for_sde()?;
    let sample = gaussian::sample_field(&spec, &lat, dseed)?;
    let raw = sample.field.scaled(amplitude / sample.field.max_abs());
    // freeze paths at the reference level
    let b_ref = mollify_drift(&raw, &MollifierSpec::new(bump_a, reference))?;
    let config = SdeConfig {
        d: lat.d(),
        z0,
        t_end: grid.t_end,
        steps: grid.steps,
        paths,
        master_seed: master,
        b2: None,
    };
    let ensemble = sde::simulate_ensemble(&config, &DriftSource::Field(b_ref))?;
    let report = sde::drift_functional_cauchy(
        &ensemble,
        &raw,
        &levels,
        reference,
        MollifierSpec::new(bump_a, reference),
        MollifierSpec::new(bump_b, reference),
    )?;
    let mut w = CsvWriter::create(&ctx.path("cauchy.csv"), "n_coarse,n_fine,sup_l2_diff,stderr", true)?;
    for r in &report.rows {
        w.row(&format!("{},{},{},{}", r.n_coarse, r.n_fine, r.sup_l2_diff, r.stderr))?;
    }
    let mut s = CsvWriter::create(
        &ctx.path("summary.csv"),
        "bump_independence,independence_stderr,noise_floor",
        true,
    )?;
    s.row(&format!(
        "{},{},{}",
        report.bump_independence, report.bump_independence_stderr, report.noise_floor
    ))?;
    ctx.finish(cfg)
}

pub fn cmd_moments(cfg: &mut ExperimentConfig, ctx: &RunContext, seed_flag: Option<u64>) -> Result<()> {
    let allowed = keyset(&[
        LATTICE_KEYS,
        TIME_KEYS,
        DRIFT_KEYS,
        OUT_KEYS,
        &["sde.seed", "sde.paths", "moments.deltas", "moments.z0_grid"],
    ]);
    cfg.check_keys(&allowed)?;
    let lat = lattice_from(cfg, sde_lattice_defaults())?;
    let master = resolve_seed(cfg, seed_flag)?;
    let grid = grid_from(cfg, 1.0, 256)?;
    let paths = cfg.usize_or("sde.paths", 10_000)?;
    let deltas = cfg.f64_list_or("moments.deltas", "-2,0,2")?;
    let z0_grid = cfg.get_or("moments.z0_grid", "0,0;2,0;0,2");
    let drift = build_drift(cfg, &lat, master)?;
    let mut w = CsvWriter::create(&ctx.path("moments.csv"), "z0,delta,ratio,stderr", true)?;
    for part in z0_grid.split(';') {
        let z0: Vec<f64> = part
            .split(',')
            .map(|s| crate::config::parse_f64(s.trim()))
            .collect::<Result<Vec<f64>>>()?;
        if z0.len() != 2 * lat.d() {
            bail!("moments.z0_grid entries need {} coordinates", 2 * lat.d());
        }
        let config = SdeConfig {
            d: lat.d(),
            z0: z0.clone(),
            t_end: grid.t_end,
            steps: grid.steps,
            paths,
            master_seed: master,
            b2: None,
        };
        let ensemble = sde::simulate_ensemble(&config, &drift.source)?;
        for row in sde::moment_report(&ensemble, &deltas) {
            w.row(&format!(
                "({}),{},{},{}",
                part.trim().replace(',', " "),
                row.delta,
                row.ratio,
                row.stderr
            ))?;
        }
    }
    w.comment(&format!("drift={}", drift.label))?;
    ctx.finish(cfg)
}

pub fn cmd_ito_test(cfg: &mut ExperimentConfig, ctx: &RunContext, seed_flag: Option<u64>) -> Result<()> {
    let allowed = keyset(&[
        LATTICE_KEYS,
        TIME_KEYS,
        DRIFT_KEYS,
        OUT_KEYS,
        &[
            "sde.seed",
            "sde.paths",
            "sde.z0",
            "ito.pde_steps",
            "ito.band",
            "forcing.kx_mult",
            "picard.max_iter",
            "picard.tol",
            "picard.omega",
        ],
    ]);
    cfg.check_keys(&allowed)?;
    let pi = std::f64::consts::PI;
    let lat = lattice_from(cfg, (1, 1024, 64, 2.0 * pi, 8.0 * pi))?;
    let master = resolve_seed(cfg, seed_flag)?;
    let grid = grid_from(cfg, 1.0, 512)?;
    let pde_steps = cfg.usize_or("ito.pde_steps", 128)?;
    if grid.steps % pde_steps != 0 {
        bail!("time.steps must be a multiple of ito.pde_steps");
    }
    let paths = cfg.usize_or("sde.paths", 10_000)?;
    let z0 = cfg.f64_list_or("sde.z0", &vec!["0"; 2 * lat.d()].join(","))?;
    let drift = build_drift(cfg, &lat, master)?;
    let band_default = if matches!(drift.pde, Drift::Zero) { 3.0 } else { 5.0 };
    let band = cfg.f64_or("ito.band", band_default)?;
    // static observable: low mode in x, velocity window
    let kx_mult = cfg.f64_or("forcing.kx_mult", 1.0)?;
    let kx = kx_mult * pi / lat.lx();
    let lat_c = lat;
    let f_static = LatticeField::from_fn(lat, move |z| {
        let mut s = (kx * z[0]).sin();
        for i in 1..lat_c.d() {
            s *= (kx * z[i]).cos();
        }
        let mut w = 1.0;
        for i in 0..lat_c.d() {
            w *= v_window(&lat_c, z[lat_c.d() + i]);
        }
        s * w
    });
    let pde_grid = TimeGrid::new(grid.t_end, pde_steps)?;
    let bank = build_filter_bank(&lat)?;
    let prop = KineticPropagator::for_grid(lat, &pde_grid);
    let opts = PicardOptions {
        max_iter: cfg.usize_or("picard.max_iter", pde_steps + 1)?,
        tol: cfg.f64_or("picard.tol", 1e-8)?,
        omega: cfg.f64_or("picard.omega", 1.0)?,
        quadrature: krl_core::Quadrature::LeftEndpoint,
    };
    let problem = PdeProblem {
        drift: drift.pde.clone(),
        forcing: SpaceTimeField::constant_in_time(pde_grid, &f_static),
        lambda: 0.0,
    };
    let (u, _) = solver::backward_solve(&problem, &bank, &prop, &opts)?;
    let config = SdeConfig {
        d: lat.d(),
        z0,
        t_end: grid.t_end,
        steps: grid.steps,
        paths,
        master_seed: master,
        b2: None,
    };
    let ensemble = sde::simulate_ensemble(&config, &drift.source)?;
    let report = sde::ito_martingale_test(&u, &ensemble, &Functional::Static(&f_static))?;
    let mut w = CsvWriter::create(
        &ctx.path("ito.csv"),
        "regression_slope,regression_stderr,qv_mean,qv_stderr,qv_expected,qv_expected_stderr,band,passed",
        true,
    )?;
    w.row(&format!(
        "{},{},{},{},{},{},{band},{}",
        report.regression_slope,
        report.regression_stderr,
        report.qv_mean,
        report.qv_stderr,
        report.qv_expected,
        report.qv_expected_stderr,
        report.passes(band)
    ))?;
    w.comment(&format!("drift={}", drift.label))?;
    ctx.finish(cfg)?;
    if !report.passes(band) {
        return Err(anyhow!(krl_core::Error::DegenerateReport(format!(
            "martingale checks failed at band {band}: slope {} +- {}, qv {} vs {}",
            report.regression_slope, report.regression_stderr, report.qv_mean, report.qv_expected
        ))));
    }
    Ok(())
}
