//! `rgs`: command-line driver for the rotational ground-state toolkit.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::run::Ctx;

#[derive(Debug, Parser)]
#[command(name = "rgs", version, about = "Ground states of the 2D rotational nonlinear Schrodinger equation")]
struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true, env = "RGS_THREADS")]
    threads: Option<usize>,
    /// Seed for random starts and the validation suite.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the scalar field equation for the profile w.
    #[command(after_help = "Outputs in --out: profile.csv (r,w), summary.json {p, w0, a_star, r1, r2}, manifest.json.\n\
Exit code 0 iff both identity residuals are below 1e-4.")]
    SolveW {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        out: PathBuf,
        /// Identity-residual tolerance.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// One constrained ground-state solve.
    #[command(after_help = "Outputs in --out: ground_state.rgs (RGS1 field dump, physical coordinates),\n\
energy.csv (rho,Omega,p,kinetic,potential,interaction,momentum,total,mu,residual),\n\
history.csv (step,energy,residual), manifest.json.")]
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ground states over rho_list x Omega_list.
    #[command(after_help = "Outputs in --out: energies.csv with the energy.csv columns plus converged,iterations,\n\
one row per run in (rho, Omega) order; run_NNN/ground_state.rgs and run_NNN/history.csv; manifest.json.\n\
--rhos values are multiples of sqrt(a*).")]
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
    },
    /// Blow-up diagnostics over a rho sweep.
    #[command(after_help = "--rhos values are multiples of sqrt(a*). --out is the report CSV; the manifest is written\n\
next to it as <out>.manifest.json. Columns: rho,eps,I_hat,I,gap,mu_eps2,z_1,z_2,z_over_eps_1,z_over_eps_2,\n\
profile_sup_dist,imag_h1,imag_sup, then diagnostics hat_reference,i_hat_formula,theta,gauge_undetermined,\n\
gauge_orthogonality,rescaled_mass,residual,converged,spacing_over_eps.")]
    Asymptotics {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        rhos: Option<Vec<f64>>,
    },
    /// Trial-state energies for rotation above the critical speed.
    #[command(after_help = "Outputs in --out: probe.csv (tau,center_1,center_2,energy), manifest.json.")]
    Nonexistence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Critical speed, concentration point and non-degeneracy of a potential.
    #[command(after_help = "With --out, writes potential.json and manifest.json.")]
    CheckPotential {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-start solves compared up to a constant phase.
    #[command(after_help = "Outputs in --out: uniqueness.csv (init,energy,residual,converged,kept,error), manifest.json.")]
    Uniqueness {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        starts: Option<usize>,
    },
    /// Runs the invariant suite and prints a pass/fail table.
    #[command(after_help = "Exit code 4 if any invariant fails. With --out, writes validate.txt and manifest.json.")]
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx::new(cli.threads.unwrap_or_else(rayon::current_num_threads), cli.seed);
    let result = match cli.command {
        Command::SolveW { p, out, tol } => run::solve_w(&ctx, p, &out, tol),
        Command::Solve { config, out } => run::solve(&ctx, &config, &out),
        Command::Sweep { config, out, rhos } => run::sweep(&ctx, &config, &out, rhos),
        Command::Asymptotics { config, out, rhos } => run::asymptotics(&ctx, &config, &out, rhos),
        Command::Nonexistence { config, out } => run::nonexistence(&ctx, &config, &out),
        Command::CheckPotential { config, out } => run::check_potential(&ctx, &config, out.as_deref()),
        Command::Uniqueness { config, out, starts } => run::uniqueness(&ctx, &config, &out, starts),
        Command::Validate { out } => run::validate(&ctx, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn rhos_are_comma_separated() {
        let cli = Cli::try_parse_from(["rgs", "asymptotics", "--config", "c.toml", "--rhos", "10,20,40", "--out", "r.csv"]).unwrap();
        match cli.command {
            Command::Asymptotics { rhos, .. } => assert_eq!(rhos, Some(vec![10.0, 20.0, 40.0])),
            _ => panic!("wrong subcommand"),
        }
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        let err = Cli::try_parse_from(["rgs", "solve", "--out", "x"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
