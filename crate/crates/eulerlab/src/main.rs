use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eulerlab::runner::{self, Request, EXIT_NUMERICAL, EXIT_OK};
use eulerlab::scenario::Overrides;
use eulerlab::selfcheck::{self, SelfCheckOptions, Status};

/// Numerical laboratory for 2D Euler flows with unbounded vorticity.
#[derive(Parser)]
#[command(name = "eulerlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario JSON file; repeat to run several concurrently.
    #[arg(long, required = true)]
    scenario: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the scenario tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Germ studies: T_theta, admissibility integrals, iterated-log identities.
    Germ(ScenarioArgs),
    /// Modulus studies: Gamma_t tables, log-log bounds, Upsilon sums.
    Modulus(ScenarioArgs),
    /// Green function tables and consistency diagnostics.
    Green(ScenarioArgs),
    /// Point-vortex trajectories.
    Vortices(ScenarioArgs),
    /// Flow maps of a vorticity field with modulus diagnostics.
    Flow(ScenarioArgs),
    /// Taylor coefficients and the analyticity estimate.
    Jets(ScenarioArgs),
    /// Newton potential and its second derivatives.
    Potential(ScenarioArgs),
    /// Runs scenarios of any task.
    Run(ScenarioArgs),
    /// Fast invariant suite.
    Selfcheck {
        /// Truncates the annulus Green series to this many terms (fault injection).
        #[arg(long)]
        annulus_terms: Option<usize>,
        /// Skips every check that needs the annulus backend.
        #[arg(long)]
        disk_only: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    runner::init_workers();
    let (task, args) = match cli.command {
        Command::Selfcheck { annulus_terms, disk_only } => {
            let checks = selfcheck::run(&SelfCheckOptions { annulus_terms, disk_only });
            for c in &checks {
                println!("{c}");
            }
            let failed = checks.iter().filter(|c| c.status == Status::Fail).count();
            let skipped = checks.iter().filter(|c| c.status == Status::Skip).count();
            println!("{} checks: {} failed, {} skipped", checks.len(), failed, skipped);
            return ExitCode::from(if failed == 0 { EXIT_OK } else { EXIT_NUMERICAL } as u8);
        }
        Command::Germ(a) => (Some("germ"), a),
        Command::Modulus(a) => (Some("modulus"), a),
        Command::Green(a) => (Some("green"), a),
        Command::Vortices(a) => (Some("vortices"), a),
        Command::Flow(a) => (Some("flow"), a),
        Command::Jets(a) => (Some("jets"), a),
        Command::Potential(a) => (Some("potential"), a),
        Command::Run(a) => (None, a),
    };
    let req = Request {
        scenarios: args.scenario,
        out: args.out,
        expected_task: task.map(String::from),
        overrides: Overrides { seed: args.seed, tol: args.tol },
    };
    let (code, reports) = runner::execute(&req);
    for r in &reports {
        eprintln!("{}: exit {}: {}", r.scenario.display(), r.code, r.message);
    }
    ExitCode::from(code as u8)
}
