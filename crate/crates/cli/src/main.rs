//! `krl`: batch experiment driver for the kinetic rough-drift laboratory.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical
//! non-convergence, 4 invariant failure.

mod config;
mod experiments;
mod selftest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use experiments::RunContext;

#[derive(Parser)]
#[command(name = "krl", version, about = "kinetic rough-drift laboratory")]
struct Cli {
    /// plain key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory (overrides output.dir)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads (outputs are independent of this)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// master seed (overrides sde.seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// run the invariant suites of every module at desk scale
    Selftest {
        /// run a single suite (lattice, paraproduct, kernel, solver,
        /// gaussian, sde)
        #[arg(long)]
        suite: Option<String>,
        /// fault-injection hook: corrupt one filter-bank symbol
        #[arg(long, hide = true)]
        corrupt_bank: bool,
    },
    /// draw a Gaussian drift field and tabulate its dyadic block decay
    SampleField,
    /// solve the kinetic Kolmogorov equation and scan the lambda-ratio table
    SolvePde,
    /// simulate a kinetic SDE ensemble
    Simulate,
    /// occupation-functional window scan along a simulated ensemble
    Krylov,
    /// mollified drift functional convergence along frozen paths
    Cauchy,
    /// weighted running-supremum moments over a start-point grid
    Moments,
    /// martingale checks of the backward-solution functional
    ItoTest,
    /// dyadic block-decay slope of a stored or sampled field
    BesovSlope,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

fn classify(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<krl_core::Error>() {
        use krl_core::Error as E;
        return match core {
            E::NonConvergence { .. } => EXIT_NONCONVERGED,
            E::NonRealOutput { .. }
            | E::LatticeMismatch
            | E::ComponentMismatch { .. }
            | E::BlockOutOfRange { .. }
            | E::DegenerateReport(_) => EXIT_INVARIANT,
            _ => EXIT_CONFIG,
        };
    }
    EXIT_CONFIG
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    match cli.cmd {
        Cmd::Selftest { suite, corrupt_bank } => {
            let results = selftest::run(suite.as_deref(), corrupt_bank);
            if results.is_empty() {
                anyhow::bail!("no suite named {:?}", suite);
            }
            let mut failed = false;
            for r in &results {
                if r.passed {
                    println!("[ok]   {}: {}", r.name, r.detail);
                } else {
                    println!("[FAIL] {}: {}", r.name, r.detail);
                    failed = true;
                }
            }
            if failed {
                return Err(anyhow::anyhow!(krl_core::Error::DegenerateReport(
                    "selftest suite failure".into()
                )));
            }
            Ok(())
        }
        Cmd::SampleField => {
            let ctx = RunContext::prepare(&mut cfg, "sample-field", cli.out)?;
            experiments::cmd_sample_field(&mut cfg, &ctx, cli.seed)
        }
        Cmd::SolvePde => {
            let ctx = RunContext::prepare(&mut cfg, "solve-pde", cli.out)?;
            experiments::cmd_solve_pde(&mut cfg, &ctx, cli.seed)
        }
        Cmd::Simulate => {
            let ctx = RunContext::prepare(&mut cfg, "simulate", cli.out)?;
            experiments::cmd_simulate(&mut cfg, &ctx, cli.seed)
        }
        Cmd::Krylov => {
            let ctx = RunContext::prepare(&mut cfg, "krylov", cli.out)?;
            experiments::cmd_krylov(&mut cfg, &ctx, cli.seed)
        }
        Cmd::Cauchy => {
            let ctx = RunContext::prepare(&mut cfg, "cauchy", cli.out)?;
            experiments::cmd_cauchy(&mut cfg, &ctx, cli.seed)
        }
        Cmd::Moments => {
            let ctx = RunContext::prepare(&mut cfg, "moments", cli.out)?;
            experiments::cmd_moments(&mut cfg, &ctx, cli.seed)
        }
        Cmd::ItoTest => {
            let ctx = RunContext::prepare(&mut cfg, "ito-test", cli.out)?;
            experiments::cmd_ito_test(&mut cfg, &ctx, cli.seed)
        }
        Cmd::BesovSlope => {
            let ctx = RunContext::prepare(&mut cfg, "besov-slope", cli.out)?;
            experiments::cmd_besov_slope(&mut cfg, &ctx, cli.seed)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KRL_LOG", "error")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("krl: cannot configure {jobs} workers: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("krl: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}
