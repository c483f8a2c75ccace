mod batch;
mod check;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use evac_core::evo::SolverMode;
use evac_core::sim::{run, RunOptions, RunOutput, ScenarioBundle, ScenarioError, SimError};

#[derive(Parser)]
#[command(
    name = "evac",
    version,
    about = "Emergency response and evacuation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and list every problem found.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Simulate one scenario and write its trace, metrics and plans.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, env = "EVAC_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        solver: Option<Solver>,
        #[arg(long)]
        quiet: bool,
    },
    /// Compare a planner against its brute-force reference on the instance
    /// the scenario produces.
    Oracle {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        module: Module,
        #[arg(long, value_enum)]
        solver: Option<Solver>,
    },
    /// Run several scenarios, seeds and solvers and tabulate the metrics.
    Batch {
        #[arg(long = "scenario", required = true, num_args = 1..)]
        scenarios: Vec<PathBuf>,
        #[arg(long, env = "EVAC_OUT", default_value = "out")]
        out: PathBuf,
        #[arg(long = "seed", num_args = 1..)]
        seeds: Vec<u64>,
        #[arg(long = "solver", value_enum, num_args = 1..)]
        solvers: Vec<Solver>,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Exact,
    Evo,
    Greedy,
}

impl Solver {
    fn mode(self) -> SolverMode {
        match self {
            Solver::Exact => SolverMode::Exact,
            Solver::Evo => SolverMode::Evo,
            Solver::Greedy => SolverMode::Greedy,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Solver::Exact => "exact",
            Solver::Evo => "evo",
            Solver::Greedy => "greedy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Module {
    Cover,
    Dispatch,
    Busevac,
}

/// Failures that map to exit code 2.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn read(path: &Path) -> anyhow::Result<ScenarioBundle> {
    let bundle = ScenarioBundle::read(path).map_err(|e| match e {
        ScenarioError::Parse { .. } => anyhow::Error::new(Invalid(e.to_string())),
        other => anyhow::Error::new(other),
    })?;
    let report = bundle.validate();
    if !report.is_empty() {
        return Err(Invalid(format!("{} is invalid:\n{report}", path.display())).into());
    }
    Ok(bundle)
}

fn simulate(
    bundle: &ScenarioBundle,
    seed: Option<u64>,
    solver: Option<Solver>,
) -> anyhow::Result<RunOutput> {
    let opts = RunOptions {
        seed,
        solver: solver.map(Solver::mode),
    };
    run(bundle, &opts).map_err(|e| match e {
        SimError::Scenario(ScenarioError::Invalid(r)) => {
            Invalid(format!("scenario is invalid:\n{r}")).into()
        }
        other => anyhow::Error::new(other).context(format!("running {}", bundle.path.display())),
    })
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Validate { scenario } => {
            read(&scenario)?;
            println!("{}: ok", scenario.display());
        }
        Command::Run {
            scenario,
            out,
            seed,
            solver,
            quiet,
        } => {
            let bundle = read(&scenario)?;
            let output = simulate(&bundle, seed, solver)?;
            output::write_run(&out, &output)
                .with_context(|| format!("writing to {}", out.display()))?;
            if !quiet {
                print!("{}", output::metrics_table(&output.metrics));
            }
        }
        Command::Oracle {
            scenario,
            module,
            solver,
        } => {
            let bundle = read(&scenario)?;
            let output = simulate(&bundle, None, solver)?;
            let settings = &bundle.scenario.solver;
            let mut settings = settings.clone();
            if let Some(s) = solver {
                settings.mode = s.mode();
            }
            let report = check::compare(module, &output.inputs, &settings)?;
            println!("{report}");
            if !report.pass {
                anyhow::bail!("solver and oracle disagree");
            }
        }
        Command::Batch {
            scenarios,
            out,
            seeds,
            solvers,
            quiet,
        } => {
            let rows = batch::run_all(&scenarios, &seeds, &solvers)?;
            batch::write(&out, &rows).with_context(|| format!("writing to {}", out.display()))?;
            if !quiet {
                print!("{}", batch::table(&rows));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Invalid>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
