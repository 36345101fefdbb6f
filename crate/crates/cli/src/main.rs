use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twotemp_cli::commands;
use twotemp_cli::output::{resolve_dir, Writer, OUT_ENV};
use twotemp_cli::{CliError, CliResult, RunConfig, TaskKind};

#[derive(Parser)]
#[command(name = "twotemp", version, about = "Two-temperature polyatomic gas: transport coefficients, DSMC relaxation and 1-D fluid runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Chapman-Enskog transport and relaxation coefficients.
    Coeffs(Common),
    /// Run the acceptance checks.
    Verify(Common),
    /// Homogeneous relaxation: ODE, DSMC ensemble and fluid solver.
    Relax(Common),
    /// Steady shock profile.
    Shock(Common),
    /// Shock tube against exact frozen and equilibrium solutions.
    Riemann(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults are used for missing blocks.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides numerics.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
}

fn load(c: &Common, kind: TaskKind) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.numerics.seed = s;
    }
    commands::check_kind(&cfg, kind)?;
    cfg.task.kind = Some(kind);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let (c, kind) = match &cli.command {
        Command::Coeffs(c) => (c, TaskKind::Coeffs),
        Command::Verify(c) => (c, TaskKind::Verify),
        Command::Relax(c) => (c, TaskKind::Relax),
        Command::Shock(c) => (c, TaskKind::Shock),
        Command::Riemann(c) => (c, TaskKind::Riemann),
    };
    let cfg = load(c, kind)?;
    let mut w = Writer::new(resolve_dir(c.out.as_deref(), &cfg), kind)?;
    let mut failed = 0;
    match kind {
        TaskKind::Coeffs => {
            let r = commands::run_coeffs(&cfg, &mut w)?;
            for v in &r.coefficients {
                println!("{:<15} {:>14.8e} +- {:.2e}", v.name, v.value, v.uncertainty);
            }
        }
        TaskKind::Verify => {
            let r = commands::run_verify(&cfg, &mut w, |c| println!("{}", c.line()))?;
            println!("{} passed, {} failed, {} skipped", r.passed, r.failed, r.skipped);
            failed = r.failed;
        }
        TaskKind::Relax => {
            let r = commands::run_relax(&cfg, &mut w)?;
            let last = r.rows.last().expect("rows");
            println!("F = {:.6}, T_tr({}) = {:.6}, T_int = {:.6} (ODE)", r.f_relax, last.t, last.t_tr_ode, last.t_int_ode);
            if let Some(z) = r.dsmc_max_z {
                println!("DSMC max |z| = {z:.3}");
            }
            if let Some(e) = r.fluid_max_abs_error {
                println!("fluid max |T - ODE| = {e:.3e}");
            }
        }
        TaskKind::Shock => {
            let r = commands::run_shock(&cfg, &mut w)?;
            println!("M = {} gamma = {:.4}: rho2/rho1 = {:.6}, Rankine-Hugoniot {:.6} (rel. error {:.2e}), t = {:.1}", r.mach, r.gamma, r.density_ratio, r.expected_ratio, r.relative_error, r.time);
        }
        TaskKind::Riemann => {
            let r = commands::run_riemann(&cfg, &mut w)?;
            println!("t = {:.4} in {} steps; L1 density error vs frozen {:.3e}, vs equilibrium {:.3e}", r.time, r.steps, r.l1_frozen, r.l1_equilibrium);
        }
    }
    let dir = w.dir().to_path_buf();
    for a in w.finish(&cfg)? {
        println!("wrote {}", dir.join(a).display());
    }
    if failed > 0 {
        return Err(CliError::Acceptance { failed });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
